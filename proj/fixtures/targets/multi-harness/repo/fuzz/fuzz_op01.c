#include <stddef.h>

int op_01(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_01(data, size);
  return 0;
}
