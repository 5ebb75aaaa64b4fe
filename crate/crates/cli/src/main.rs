fn main() {
    let env_out = std::env::var("TRAJOPT_OUT").ok();
    std::process::exit(trajopt_cli::run_cli(
        std::env::args_os(),
        env_out.as_deref(),
    ));
}
