// Placeholder entry point; the subcommand dispatcher lands with the cli module.
int main() { return 0; }
