fn main() {
    std::process::exit(lq_transfer::cli::run(std::env::args_os()));
}
