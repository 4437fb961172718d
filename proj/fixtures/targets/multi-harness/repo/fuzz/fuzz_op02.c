#include <stddef.h>

int op_02(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_02(data, size);
  return 0;
}
