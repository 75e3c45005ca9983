fn main() {
    std::process::exit(isoscatter::cli::run(std::env::args_os()));
}
