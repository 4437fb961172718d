#include <stddef.h>

int op_00(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_00(data, size);
  return 0;
}
