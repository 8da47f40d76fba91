fn main() {
    std::process::exit(bdrelax::cli::run(std::env::args_os()));
}
