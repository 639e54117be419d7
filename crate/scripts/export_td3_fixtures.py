"""Train a small TD3 agent on a Gymnasium environment (LunarLanderContinuous-v3
by default) and export its actor and twin
critics in the toolkit's weight format, plus forward-pass fixtures computed
by PyTorch on the exported weights.

The critics are exported to take actions in environment units: the
framework's [-1, 1] action normalisation is folded into the first layer.

Usage: python3 scripts/export_td3_fixtures.py OUT_DIR [--env ID] [--steps N] [--seed S]

Requires stable-baselines3 and gymnasium[box2d].
"""

import argparse
import copy
import json
import pathlib

import gymnasium as gym
import numpy as np
import torch
from stable_baselines3 import TD3


def layers_of(seq):
    mods = list(seq)
    out = []
    for i, m in enumerate(mods):
        if isinstance(m, torch.nn.Linear):
            nxt = mods[i + 1] if i + 1 < len(mods) else None
            if isinstance(nxt, torch.nn.ReLU):
                act = "relu"
            elif isinstance(nxt, torch.nn.Tanh):
                act = "tanh"
            elif nxt is None:
                act = "linear"
            else:
                raise ValueError(f"unsupported layer type {type(nxt).__name__}")
            out.append((m.weight.detach().double().numpy(), m.bias.detach().double().numpy(), act))
        elif not isinstance(m, (torch.nn.ReLU, torch.nn.Tanh)):
            raise ValueError(f"unsupported layer type {type(m).__name__}")
    return out


def document(layers, kind, scale=None):
    doc = {"input": kind, "layers": [{"w": w.tolist(), "b": b.tolist(), "act": a} for w, b, a in layers]}
    if scale is not None:
        doc["output_scale"] = list(scale)
    return doc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--env", default="LunarLanderContinuous-v3")
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fixtures", type=int, default=128)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    env = gym.make(args.env)
    model = TD3("MlpPolicy", env, seed=args.seed, learning_starts=500,
                policy_kwargs={"net_arch": [64, 64]}, verbose=0)
    model.learn(total_timesteps=args.steps)

    low, high = env.action_space.low.astype(np.float64), env.action_space.high.astype(np.float64)
    assert np.allclose(low, -high), "exporter assumes symmetric action bounds"
    half = high

    actor = model.policy.actor.mu
    critics = model.policy.critic.q_networks
    obs_dim = env.observation_space.shape[0]

    docs = {"actor.json": document(layers_of(actor), "state", half.tolist())}
    for k, q in enumerate(critics):
        layers = layers_of(q)
        w, b, act = layers[0]
        w = w.copy()
        # q(s, a_env) = net(s, a_env / half)
        w[:, obs_dim:] = w[:, obs_dim:] / half
        layers[0] = (w, b, act)
        docs[f"critic{k + 1}.json"] = document(layers, "state_action")
    for name, doc in docs.items():
        (args.out / name).write_text(json.dumps(doc))

    rng = np.random.default_rng(args.seed)
    # Unbounded observation spaces are sampled in [-2, 2].
    lo = np.clip(env.observation_space.low, -2.0, 2.0)
    hi = np.clip(env.observation_space.high, -2.0, 2.0)
    obs = rng.uniform(lo, hi, size=(args.fixtures, obs_dim)).astype(np.float32)
    act = rng.uniform(low, high, size=(args.fixtures, len(low))).astype(np.float32)
    # Fixture outputs are computed by PyTorch in float64 on the float32
    # weights widened exactly, which is what the exported documents hold.
    actor = copy.deepcopy(actor).double()
    critics = [copy.deepcopy(q).double() for q in critics]
    with torch.no_grad():
        ot = torch.as_tensor(obs.astype(np.float64))
        a_out = actor(ot).numpy() * half
        fixtures = [{"input": o.astype(np.float64).tolist(), "output": y.tolist()} for o, y in zip(obs, a_out)]
        (args.out / "actor_fixtures.json").write_text(json.dumps(fixtures))
        at = torch.as_tensor(act.astype(np.float64) / half)
        for k, q in enumerate(critics):
            q_out = q(torch.cat([ot, at], dim=1)).numpy()
            fixtures = [{"input": np.concatenate([o, a]).astype(np.float64).tolist(), "output": y.tolist()}
                        for o, a, y in zip(obs, act, q_out)]
            (args.out / f"critic{k + 1}_fixtures.json").write_text(json.dumps(fixtures))
    print(f"exported to {args.out}")


if __name__ == "__main__":
    main()
