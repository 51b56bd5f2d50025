fn main() {
    std::process::exit(xcforge::cli::main());
}
