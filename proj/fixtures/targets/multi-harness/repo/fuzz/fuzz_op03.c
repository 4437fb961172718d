#include <stddef.h>

int op_03(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_03(data, size);
  return 0;
}
