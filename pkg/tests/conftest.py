from hypothesis import settings

settings.register_profile("ccmopt", max_examples=50, deadline=None)
settings.load_profile("ccmopt")
