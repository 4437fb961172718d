#include <stddef.h>

int op_10(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_10(data, size);
  return 0;
}
