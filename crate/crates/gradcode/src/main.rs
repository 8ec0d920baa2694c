use clap::Parser;
use gradcode::cli::{run_command, verify_command, Cli, Command};

fn main() {
    env_logger::init();

    if let Ok(threads) = std::env::var("GRADCODE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid GRADCODE_THREADS={threads:?}"),
        }
    }

    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => match run_command(&args) {
            Ok(artifacts) => {
                println!("wrote {}", artifacts.trials_csv.display());
                println!("wrote {}", artifacts.summary_json.display());
                println!("wrote {}", artifacts.figure_csv.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Command::Verify(args) => match verify_command(&args) {
            Ok(true) => 0,
            Ok(false) => 1,
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
    };
    std::process::exit(code);
}
