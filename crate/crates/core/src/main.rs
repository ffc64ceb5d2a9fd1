fn main() {
    std::process::exit(knapsack_game::cli::run(std::env::args_os()));
}
