fn main() { std::process::exit(qsd_lab::cli::run_main()); }
