#include <stddef.h>

int op_09(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_09(data, size);
  return 0;
}
