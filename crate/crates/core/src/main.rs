fn main() {
    std::process::exit(traveltime::cli::main_entry());
}
