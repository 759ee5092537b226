"""Two operators share the world: phantoms, locks, and one validated motion."""

from telecollab.scenario import ScriptedClient, audit_convergence
from telecollab.stack import LocalStack

stack = LocalStack(camera_count=3)
stack.load_default_app()

alice = ScriptedClient(stack, "alice", "WEB")
bob = ScriptedClient(stack, "bob", "VR")
alice.join()
bob.join()
print("connected:", stack.session.snapshot().connected_users)

print("\nalice jogs her phantom; the real robot does not move:")
alice.update([0.3, -0.2, 0.25, 0.0, 0.1, 0.0])
phantom = [o for o in stack.session.snapshot().objects
           if o.object_id == "phantom:alice"][0]
print("  phantom:alice q =", [round(v, 2) for v in phantom.pose])
print("  real robot q    =", [round(v, 2) for v in stack.sim.current_q()])

print("\nlock arbitration:")
print("  alice locks peg_left ->", alice.lock("peg_left"))
print("  bob tries too        ->", bob.lock("peg_left"))

print("\nvalidation commits the phantom to the real robot:")
receipt = alice.validate()
print("  receipt:", receipt)
steps = stack.sim.run_until_idle()
print(f"  converged in {steps} ticks; real robot q =",
      [round(v, 2) for v in stack.sim.current_q()])

alice.pump(); bob.pump()
divergence = audit_convergence(stack, [alice, bob])
print("\nboth clients' world models match the server:",
      "yes" if divergence == "" else divergence)

print("executed-command audit:",
      [e["command_id"] for e in stack.sim.executed_log], "<- exactly the",
      "validated receipt", receipt["command_id"])
stack.stop()
