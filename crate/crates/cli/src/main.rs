fn main() {
    std::process::exit(maskbench::run_cli(std::env::args_os()));
}
