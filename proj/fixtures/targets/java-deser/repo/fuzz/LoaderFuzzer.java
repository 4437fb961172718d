package com.example;

public class LoaderFuzzer {
  public static void fuzzerTestOneInput(byte[] data) throws Exception {
    ObjectLoader.describe(data);
  }
}
