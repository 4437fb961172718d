package com.example;

import java.io.ByteArrayInputStream;
import java.io.ObjectInputStream;

// objstore: object loader
public class ObjectLoader {
  public static Object load(byte[] data) throws Exception {
    if (data.length < 4 || data[0] != (byte) 0xac || data[1] != (byte) 0xed) {
      return null;
    }
    ObjectInputStream in = new ObjectInputStream(new ByteArrayInputStream(data));
    return in.readObject();
  }

  public static String describe(byte[] data) throws Exception {
    Object o = load(data);
    return o == null ? "empty" : o.getClass().getName();
  }
}
