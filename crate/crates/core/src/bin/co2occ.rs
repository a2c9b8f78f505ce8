fn main() {
    std::process::exit(co2occ::cli::run(std::env::args_os()));
}
