fn main() {
    std::process::exit(fracctrl::cli::main_with_args(std::env::args_os()));
}
