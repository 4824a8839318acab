fn main() {
    std::process::exit(panorf::cli::main());
}
