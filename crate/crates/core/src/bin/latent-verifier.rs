fn main() {
    std::process::exit(latent_verifier::cli::run(std::env::args_os()));
}
