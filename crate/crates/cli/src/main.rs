use varsearch_cli::config::ProcessEnv;

fn main() {
    let code = varsearch_cli::main_with_args(std::env::args_os(), &ProcessEnv, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
