fn main() {
    std::process::exit(capillary_rig_cli::run(std::env::args_os()));
}
