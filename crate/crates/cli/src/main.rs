fn main() {
    std::process::exit(lczpipe_cli::run(std::env::args_os()));
}
