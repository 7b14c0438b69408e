fn main() {
    std::process::exit(sseplab::harness::run_cli(std::env::args_os()));
}
