// Placeholder entry point; subcommands land with the io module.
#include <cstdio>

int main() {
  std::puts("pivotal: build in progress");
  return 2;
}
