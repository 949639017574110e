fn main() {
    std::process::exit(ganalyzer::cli::main());
}
