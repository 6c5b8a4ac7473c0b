fn main() {
    std::process::exit(vanet_sim::cli::cli_main(std::env::args_os()));
}
