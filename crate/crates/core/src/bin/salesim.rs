fn main() -> std::process::ExitCode {
    salesim::cli::main_entry()
}
