// placeholder, replaced once the library is in place
int main() { return 0; }
