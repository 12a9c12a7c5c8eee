fn main() {
    std::process::exit(search_duopoly::cli::run(std::env::args_os()));
}
