use clap::Parser;

use selfscope_cli::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = selfscope_cli::run(cli, |addr| {
        println!("listening on http://{addr}");
    });
    if let Err(e) = result {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
