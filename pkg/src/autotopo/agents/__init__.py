"""Agent roles and the refinement pipeline that coordinates them.

Six roles cooperate on one design session: the scientist formulates a
problem spec from the user's query, the validator checks and corrects
it, the planner resolves run parameters, the runner executes the
kernel, the reviewer diagnoses failed runs, and the critic judges
finished ones.  ``pipeline.run_pipeline`` wires them into the
refinement loop; ``memory.SessionMemory`` is the shared record.
"""
