#include "dne/dne.hpp"
int main() { return 0; }
