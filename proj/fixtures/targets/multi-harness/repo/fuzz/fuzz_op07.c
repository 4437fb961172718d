#include <stddef.h>

int op_07(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_07(data, size);
  return 0;
}
