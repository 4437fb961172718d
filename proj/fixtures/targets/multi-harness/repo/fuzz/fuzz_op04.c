#include <stddef.h>

int op_04(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_04(data, size);
  return 0;
}
