#include <stddef.h>

int op_06(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_06(data, size);
  return 0;
}
