#include <stddef.h>
#include <string.h>
#include "parse.h"

/* tinyparse: record parser */
static int parse_header(const unsigned char *data, size_t size) {
  if (size < 4) return -1;
  if (memcmp(data, "TLV1", 4) != 0) return -1;
  return 0;
}

int parse_record(const unsigned char *data, size_t size) {
  unsigned char buf[32];
  if (parse_header(data, size) != 0) return 0;
  size_t len = data[4];
  if (len > 16) {
    memcpy(buf, data + 5, len);
  }
  return buf[0];
}
