#include "sb/schrodinger_bridge.hpp"
int main() { return 1; }
