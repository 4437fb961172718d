#include <stddef.h>
#include <stdint.h>
#include "../src/parse.h"

int LLVMFuzzerTestOneInput(const uint8_t *data, size_t size) {
  parse_record(data, size);
  return 0;
}
