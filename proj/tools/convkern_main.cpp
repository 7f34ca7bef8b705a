#include <cstdio>

int main() {
  std::puts("convkern: CLI not wired up yet");
  return 1;
}
