fn main() {
    std::process::exit(cellhmm::cli::main());
}
