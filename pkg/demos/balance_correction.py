"""Pull a pose leaning 0.3 rad forward back over its feet."""
from physmotion.character import reference_human
from physmotion.contact import ContactState
from physmotion.correction import BalanceCorrector, assess_balance
from physmotion.synthetic import lean_pose


def main():
    model = reference_human()
    q = lean_pose(model, 0.3)
    down = ContactState(True, (True,) * 4, 0)
    corrector = BalanceCorrector(model)
    print(f"frame 0: theta {assess_balance(model, q, down).theta:.4f} rad")
    for t in range(1, 41):
        out, _ = corrector.step(q, down)
        a = assess_balance(model, out, down)
        print(f"frame {t}: theta {a.theta:.4f} rad, CoG inside support: {a.cog_inside}")
        if a.cog_inside:
            break


if __name__ == "__main__":
    main()
