fn main() {
    std::process::exit(metastable::cli::main());
}
