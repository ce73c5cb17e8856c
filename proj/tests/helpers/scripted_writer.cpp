// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Issues exactly: openat(O_CREAT|O_WRONLY|O_TRUNC), three writes, close.
// Built static so the dynamic loader adds no opens of its own.

#include <fcntl.h>
#include <sys/syscall.h>
#include <unistd.h>

int main(int argc, char** argv) {
  if (argc != 2) return 2;
  const long fd = syscall(SYS_openat, AT_FDCWD, argv[1], O_CREAT | O_WRONLY | O_TRUNC, 0644);
  if (fd < 0) return 1;
  static const char kLine[] = "scripted line\n";
  for (int i = 0; i < 3; ++i) syscall(SYS_write, fd, kLine, sizeof kLine - 1);
  syscall(SYS_close, fd);
  return 0;
}
