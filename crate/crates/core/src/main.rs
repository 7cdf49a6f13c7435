fn main() {
    std::process::exit(sheetql::cli::run(std::env::args_os()));
}
