fn main() {
    std::process::exit(contact_pinn::cli::run_from_args(std::env::args_os()));
}
