import bpy

bpy.ops.mesh.primitive_cylinder_add(radius=0.2, depth=2.0)
trunk = bpy.context.active_object
group = trunk.vertex_groups.new(name="Trunk")
group.add([0, 1, 2, 3], 1.0, 'REPLACE')
bpy.ops.object.mode_set(mode='EDIT')
bpy.ops.object.mode_set(mode='OBJECT')
trunk.location.z = 1.0
bpy.ops.transform.resize(value=(1.0, 1.0, 1.5))
