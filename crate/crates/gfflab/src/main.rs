fn main() -> std::process::ExitCode {
    gfflab::cli::main()
}
