#include <cstdio>
int main() {
  std::puts("acceptance suite pending");
  return 1;
}
