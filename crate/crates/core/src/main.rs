fn main() {
    std::process::exit(lorawan_capacity::harness::cli_main(std::env::args_os()));
}
