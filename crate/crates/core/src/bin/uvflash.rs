fn main() {
    std::process::exit(uvflash::bench::cli::run(std::env::args_os()));
}
