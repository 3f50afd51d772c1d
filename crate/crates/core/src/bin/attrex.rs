fn main() -> std::process::ExitCode {
    attrex::cli::main()
}
