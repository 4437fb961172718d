#include <stddef.h>

int op_11(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_11(data, size);
  return 0;
}
