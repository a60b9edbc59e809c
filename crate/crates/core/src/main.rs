fn main() {
    std::process::exit(oddreg::cli::run(std::env::args_os()));
}
