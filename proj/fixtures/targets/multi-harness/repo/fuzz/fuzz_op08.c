#include <stddef.h>

int op_08(const unsigned char *data, size_t size);

int LLVMFuzzerTestOneInput(const unsigned char *data, size_t size) {
  op_08(data, size);
  return 0;
}
