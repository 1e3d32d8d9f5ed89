fn main() {
    std::process::exit(sfde_lab::main_with_args(std::env::args_os()));
}
