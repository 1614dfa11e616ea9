fn main() {
    bmgc::cli::main();
}
