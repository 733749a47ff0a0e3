fn main() {
    std::process::exit(csylattice::runner::cli_main());
}
