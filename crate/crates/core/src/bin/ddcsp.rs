fn main() {
    std::process::exit(ddcsp::harness::cli_main(std::env::args_os()));
}
