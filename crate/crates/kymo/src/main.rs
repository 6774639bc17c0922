fn main() {
    std::process::exit(kymo::cli::main_entry());
}
