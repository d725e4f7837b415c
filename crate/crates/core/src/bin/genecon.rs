fn main() {
    std::process::exit(genecon::cli::run(std::env::args_os()));
}
