"""Fix the gridrooms step budget used by the exploration acceptance test.

For each seed, trains A2C with and without the RE3 bonus and records the
first global step at which a training episode reached the goal.
"""
import argparse
import json
import time

from plugrl.agents import A2C


def first_success(agent):
    for step, ret in agent.report_.episodes:
        if ret > 0:
            return step
    return None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=21)
    ap.add_argument("--max-episode-steps", type=int, default=150)
    ap.add_argument("--budget", type=int, default=60_000)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--beta0", type=float, default=0.05)
    ap.add_argument("--kappa", type=float, default=0.0)
    ap.add_argument("--ent-coef", type=float, default=0.01)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--rewards", default="none,re3")
    ap.add_argument("--out", default=None, help="write the JSON result here")
    args = ap.parse_args()
    env_config = {"size": args.size, "max_episode_steps": args.max_episode_steps}
    out = {"config": vars(args), "runs": []}
    for reward in args.rewards.split(","):
        for seed in range(args.seeds):
            t = time.time()
            agent = A2C(seed=seed, reward=reward, beta0=args.beta0, kappa=args.kappa, ent_coef=args.ent_coef,
                        lr=args.lr)
            agent.fit("gridrooms-v0", args.budget, env_config=env_config, eval_every=0)
            hit = first_success(agent)
            out["runs"].append({"reward": reward, "seed": seed, "first_success": hit})
            print(reward, seed, hit, f"{time.time() - t:.0f}s", flush=True)
    text = json.dumps(out, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


if __name__ == "__main__":
    main()
