fn main() {
    std::process::exit(granet_core::cli::main());
}
