fn main() {
    std::process::exit(batchcrowd::cli::run_cli(std::env::args_os()));
}
