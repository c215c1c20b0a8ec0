fn main() {
    std::process::exit(cemsim_core::cli::main());
}
