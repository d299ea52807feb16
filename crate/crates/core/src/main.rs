fn main() {
    std::process::exit(varlap::cli::main());
}
