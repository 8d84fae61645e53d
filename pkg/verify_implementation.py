import asyncio
import os

import httpx

from rigfix.simulator import SimConfig, generate_scene, render_matches

BASE_URL = os.getenv("BASE_URL", "http://localhost:8000")
API_KEY = os.getenv("APP_API_KEY", "")


async def verify():
    print(f"Verifying service at {BASE_URL}...")
    headers = {"X-API-Key": API_KEY} if API_KEY else {}

    async with httpx.AsyncClient(base_url=BASE_URL, timeout=30.0, headers=headers) as client:
        # 1. Health Check
        try:
            resp = await client.get("/health")
            print(f"Health Check: {resp.status_code} - {resp.json()}")
        except Exception as e:
            print(f"Health Check Failed: {e}")
            return

        # 2. Solve a known scenario and compare with its truth
        scene = generate_scene(SimConfig(num_points=400, d_omega_deg=[0.2, -0.3, 0.4], d_f=0.004, seed=1))
        matches = render_matches(scene, linearized=True)
        payload = {
            "k0": scene.k0.model_dump(),
            "k1": scene.k1.model_dump(),
            "matches": [[*l, *r] for l, r in zip(matches.left_px.tolist(), matches.right_px.tolist())],
        }
        try:
            resp = await client.post("/v1/rectify/solve", json=payload)
            body = resp.json()
            print(f"Solve: {resp.status_code} - {body['gate']}")
            print(f"  d_omega_deg  estimated {body['d_omega_deg']}")
            print(f"               true      {scene.true_d_omega.degrees()}")
            print(f"  d_f          estimated {body['d_f']}  true {scene.true_df}")
        except Exception as e:
            print(f"Solve Check Failed: {e}")

    print("\nVerification steps complete. Check /docs for full API testing.")


if __name__ == "__main__":
    asyncio.run(verify())
