#include <cstdio>

int main() {
    std::puts("riconv: cli under construction");
    return 0;
}
