#include <stddef.h>

int op_05(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_05(data, size);
  return 0;
}
