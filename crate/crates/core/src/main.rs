fn main() {
    std::process::exit(flexmesh::cli::run_cli(std::env::args_os()));
}
