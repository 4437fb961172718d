#ifndef TINYPARSE_PARSE_H
#define TINYPARSE_PARSE_H
#include <stddef.h>

int parse_record(const unsigned char *data, size_t size);

#endif
