#include <stddef.h>
#include <string.h>

/* multiop: opcode handlers */
int op_00(const unsigned char *data, size_t size) {
  return size > 0 ? data[0] : 0;
}

int op_01(const unsigned char *data, size_t size) {
  return size > 1 ? data[1] : 0;
}

int op_02(const unsigned char *data, size_t size) {
  return size > 2 ? data[2] : 0;
}

int op_03(const unsigned char *data, size_t size) {
  return size > 3 ? data[3] : 0;
}

int op_04(const unsigned char *data, size_t size) {
  return size > 4 ? data[4] : 0;
}

int op_05(const unsigned char *data, size_t size) {
  return size > 5 ? data[5] : 0;
}

int op_06(const unsigned char *data, size_t size) {
  return size > 6 ? data[6] : 0;
}

int op_07(const unsigned char *data, size_t size) {
  char name[8];
  if (size < 2 || data[0] != 'N') return 0;
  strcpy(name, (const char *)data + 1);
  return name[0];
}

int op_08(const unsigned char *data, size_t size) {
  return size > 8 ? data[8] : 0;
}

int op_09(const unsigned char *data, size_t size) {
  return size > 9 ? data[9] : 0;
}

int op_10(const unsigned char *data, size_t size) {
  return size > 10 ? data[10] : 0;
}

int op_11(const unsigned char *data, size_t size) {
  return size > 11 ? data[11] : 0;
}
