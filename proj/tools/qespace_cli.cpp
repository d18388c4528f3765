#include <cstdio>

int main() {
    std::puts("qespace cli: suites not wired yet");
    return 1;
}
